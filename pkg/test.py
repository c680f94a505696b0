import unittest

from tests.api_tests import *
from tests.baseline_tests import *
from tests.cli_tests import *
from tests.conic_solver_tests import *
from tests.coordinator_tests import *
from tests.dso_tests import *
from tests.grid_model_tests import *
from tests.milp_solver_tests import *
from tests.reporting_tests import *
from tests.run_config_tests import *
from tests.synthetic_case_tests import *
from tests.tso_tests import *


if __name__ == '__main__':
    # run all imported test cases
    unittest.main()
