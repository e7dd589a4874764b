from .bandit import (BanditBelief, cfa_interval_estimation, cfa_ucb, greedy, make_selector,
                     pfa_boltzmann)
from .storage import (POLICY_IDS, PolicyParams, decision_grid, dla_cfa_policy, dla_plan, dla_policy,
                      hybrid_vfa_pfa, make_policy, pfa_affine, pfa_threshold, vfa_policy, zero_policy)
from .avi import AviDivergence, storage_candidates, vfa_train_avi
