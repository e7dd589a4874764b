from .simplex import LpProblem, LpSolution, solve_lp
