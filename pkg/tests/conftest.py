import pytest

from oedcal.calib_model import RadiochromicModel, RegressorMode
from oedcal.solvers import SolverOptions, reference_optima, solve_d_optimal


@pytest.fixture(scope="session")
def model():
    return RadiochromicModel()


@pytest.fixture(scope="session")
def options():
    return SolverOptions()


@pytest.fixture(scope="session")
def optima(model, options):
    """D, c_alpha, c_beta, c_gamma, GI and VI optima of the radiochromic scenario, solved once."""
    print("\nSolving the reference optima...")
    try:
        result = reference_optima(model, options=options)
    except Exception as e:
        pytest.fail(f"Reference optima could not be solved. Error: {e}")
    for name, report in result.items():
        print(f"{name}: {report.design_response} value {report.criterion_value:.8g}")
    return result


@pytest.fixture(scope="session")
def naive_d(model, options):
    try:
        return solve_d_optimal(model, mode=RegressorMode.NAIVE_INVERSE, options=options)
    except Exception as e:
        pytest.fail(f"Naive-inverse D-optimal solver failed. Error: {e}")
