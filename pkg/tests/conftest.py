"""
Shared fixtures: a two-bus toy grid with hand-checkable values and the bundled IEEE cases.
"""

import pytest

from stealth_grid.gaussian_model import StateModel
from stealth_grid.grid_jacobian import dc_jacobian
from stealth_grid.matpower_ingest import bundled_case, parse_case

# Two buses, one branch 1-2 with x = 1, slack at bus 2. H = (1, -1, 1, -1)^T.
TOY_CASE_TEXT = """function mpc = toy2
mpc.version = '2';
mpc.baseMVA = 100;

%% bus data
%	bus_i	type	Pd	Qd	Gs	Bs	area	Vm
mpc.bus = [
	1	1	0	0	0	0	1	1.0;
	2	3	0	0	0	0	1	1.0;
];

%% branch data
%	fbus	tbus	r	x	b	rateA	rateB	rateC	ratio	angle	status
mpc.branch = [
	1	2	0	1.0	0	0	0	0	0	0	1;
];
"""

# Derived by hand for the toy grid at SNR 10 dB: mu = 4, sigma^2 = 0.1
TOY_MU = 4.0
TOY_NOISE_VAR = 0.1
TOY_WEIGHT = 4.0 / 4.1


@pytest.fixture
def toy_case_text():
    return TOY_CASE_TEXT


@pytest.fixture
def toy_case():
    return parse_case(TOY_CASE_TEXT)


@pytest.fixture
def toy_case_path(tmp_path):
    path = tmp_path / "toy2.m"
    path.write_text(TOY_CASE_TEXT, encoding="utf-8")
    return path


@pytest.fixture
def toy_h(toy_case):
    return dc_jacobian(toy_case)


@pytest.fixture
def toy_model(toy_h):
    return StateModel.from_snr(toy_h, 0.1, 10.0)


@pytest.fixture(scope="session")
def case14():
    return bundled_case("case14")


@pytest.fixture(scope="session")
def case30():
    return bundled_case("case30")


@pytest.fixture(scope="session")
def case118():
    return bundled_case("case118")


@pytest.fixture(scope="session")
def case14_h(case14):
    return dc_jacobian(case14)


@pytest.fixture(scope="session")
def case14_model(case14_h):
    return StateModel.from_snr(case14_h, 0.1, 10.0)
