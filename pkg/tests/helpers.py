import numpy as np

from ptelicit import design
from ptelicit.agents import AgentConfig, aggregate, run_battery_pass
from ptelicit.estimation import ChoiceTable
from ptelicit.pt_core import prospect_utilities
from ptelicit.seeding import derive_seed


def agent_table(params, passes=256, master_seed=0, scheme=design.Round.BASELINE, assignment=None):
    """Counts from full synthetic-agent battery passes."""
    agent = AgentConfig.synthetic_pt(params)
    res = [run_battery_pass(agent, scheme, assignment, derive_seed(master_seed, "stage1", i),
                            pass_id=i) for i in range(passes)]
    return ChoiceTable.from_counts(aggregate(res))


def raw_probs(sigma, lam, gamma, table=None):
    """Choice probabilities without the parameter box (for out-of-box truths)."""
    D = (table or count_table(np.zeros(35, int), 1)).design_matrix
    d = prospect_utilities(*D[:, :4].T, sigma, lam, gamma) - prospect_utilities(*D[:, 4:].T, sigma, lam, gamma)
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-d))


def count_table(k, n):
    n = np.broadcast_to(n, (35,))
    return ChoiceTable.from_counts({lid: (int(a), int(b)) for lid, a, b in zip(design.LOTTERY_IDS, k, n)})


def binomial_table(params, n, seed):
    """Direct binomial draw of the counts; same law as agent_table, faster."""
    p = raw_probs(*params.as_tuple())
    return count_table(np.random.default_rng(seed).binomial(n, p), n)
