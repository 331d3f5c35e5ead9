# Meta-set cost accounting: plan an expected spend, bound the worst case
# under per-database caps, and replay charges against a live ledger.

from driftgauge import BudgetLedger, CostModel, plan_budget, worst_case_bound
from driftgauge.errors import BudgetExhausted, CapExceeded

cm = CostModel(
    c_gen=0.00012,      # per generated candidate
    c_val=0.00003,      # per lightweight validation check
    c_exec=0.0004,      # per execution check
    gen_multiplier=1.05,
    val_multiplier=1.05,
    exec_multiplier=0.10,
    total_budget=1000.0,
)

plan = plan_budget(cm, n_pairs=3_373_204)
print(f"expected cost for {plan.n_pairs:,} accepted pairs: "
      f"{plan.expected_cost:.2f} <= {plan.budget:.2f} ({'feasible' if plan.feasible else 'infeasible'})")

bound = worst_case_bound(cm, db_count=24_625, cap_gen=160, cap_exec=40)
print(f"worst case if every database hits both caps: {bound:.2f}")

# the ledger enforces the caps and the global budget charge by charge
ledger = BudgetLedger(cm, cap_gen=160, cap_exec=40)
ledger.charge("db-042", "gen", 24)   # one generation batch
ledger.charge("db-042", "val", 24)   # validation follows generation
ledger.charge("db-042", "exec", 24)

try:
    ledger.charge("db-042", "exec", 24)  # would exceed the 40-per-db cap
except CapExceeded as exc:
    print(f"rejected: {exc}")

for batch in range(10):
    try:
        ledger.charge("db-007", "gen", 24)
    except CapExceeded:
        print(f"db-007 generation capped after {batch} batches of 24")
        break

snap = ledger.snapshot()
print(f"total spent: {snap['total_cost']:.6f} of {snap['budget']:.2f}")
print(f"per-database counters: {snap['per_database']}")
assert ledger.recomputed_units() == ledger.total_units  # conservation is exact
