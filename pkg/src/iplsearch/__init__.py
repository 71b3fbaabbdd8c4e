"""Value-function-guided proof search for intuitionistic propositional logic."""
from .calculus import ProofTree, Rule, RuleInstance, check_proof, decide
from .search import SearchConfig, State, greedy_dfs, run_episode
from .syntax import Formula, Sequent, parse_formula, parse_sequent, print_formula

__all__ = [
    "Formula", "Sequent", "parse_formula", "parse_sequent", "print_formula",
    "ProofTree", "Rule", "RuleInstance", "check_proof", "decide",
    "SearchConfig", "State", "greedy_dfs", "run_episode",
]
