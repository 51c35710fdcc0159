#!/usr/bin/env python3
"""
Smoke check for stealth_grid.

Checks that the dependencies import, that the bundled cases load with the
expected sizes, that the two-bus toy grid reproduces its hand-derived
values, and that the tool server answers a scripted session.
"""

import asyncio
import sys
from pathlib import Path

# Add the project directory to Python path
project_dir = Path(__file__).parent
sys.path.insert(0, str(project_dir))

TOY_CASE = """function mpc = toy2
mpc.baseMVA = 100;
mpc.bus = [
	1	1	0	0	0	0	1	1.0;
	2	3	0	0	0	0	1	1.0;
];
mpc.branch = [
	1	2	0	1.0	0	0	0	0	0	0	1;
];
"""


def check_dependencies():
    """Check that the required packages import."""
    print("Checking Dependencies...")

    required_deps = {
        "numpy": "arrays and random streams",
        "scipy": "Cholesky, quadrature and root finding",
        "pandas": "CSV output",
        "pydantic": "configuration and tool argument validation",
    }
    ok = True
    for dep, description in required_deps.items():
        try:
            module = __import__(dep)
            print(f"✓ {dep} {getattr(module, '__version__', '')} - {description}")
        except ImportError:
            print(f"✗ {dep} - {description} (REQUIRED)")
            ok = False
    return ok


def check_cases():
    """Check bus/branch counts and measurement rank of the bundled cases."""
    print("Checking Bundled Cases...")

    try:
        from stealth_grid.experiment_cli import case_info

        expected = {"case14": (14, 20, 1, 13), "case30": (30, 41, 1, 29), "case118": (118, 186, 69, 117)}
        ok = True
        for name, sizes in expected.items():
            info = case_info(name)
            got = (info["n_bus"], info["n_branch"], info["slack"], info["rank"])
            if got == sizes:
                print(f"✓ {name}: {info['m']}x{info['n']} measurement matrix of rank {info['rank']}")
            else:
                print(f"✗ {name}: expected {sizes}, got {got}")
                ok = False
        return ok

    except Exception as e:
        print(f"✗ Case check failed: {e}")
        return False


def check_toy_grid():
    """Check MI and P_D on the two-bus grid against closed forms."""
    print("Checking Two-Bus Grid...")

    try:
        import numpy as np
        from scipy import stats

        from stealth_grid import StateModel, build_spectrum, dc_jacobian, mi_corollary, parse_case, prob_detection

        h = dc_jacobian(parse_case(TOY_CASE))
        model = StateModel.from_snr(h, 0.1, 10.0)
        w = 4.0 / 4.1
        checks = {
            "mutual information at lambda=2": (mi_corollary(h, model, 2.0), 0.5 * np.log(1.0 + 4.0 / 2.1)),
            "detection probability at lambda=2, tau=2": (
                prob_detection(build_spectrum(h, model, 2.0, 2.0)),
                2.0 * stats.norm.sf(np.sqrt(2.0 * (2.0 * np.log(2.0) + np.log1p(w / 2.0)) / w)),
            ),
        }
        ok = True
        for label, (got, want) in checks.items():
            if abs(got - want) < 1e-6:
                print(f"✓ {label}: {got:.6f}")
            else:
                print(f"✗ {label}: expected {want:.6f}, got {got:.6f}")
                ok = False
        return ok

    except Exception as e:
        print(f"✗ Two-bus check failed: {e}")
        return False


async def check_server():
    """Check the tool server over a scripted initialize / tools/call session."""
    print("Checking Tool Server...")

    try:
        from stealth_grid.attack_server import GridAttackServer

        server = GridAttackServer()
        init_response = await server.handle_request({"jsonrpc": "2.0", "id": 1, "method": "initialize"})
        if "result" in init_response and "protocolVersion" in init_response["result"]:
            print("✓ initialize response is valid")
        else:
            print("✗ initialize response is invalid")
            return False

        tools = await server.list_tools()
        print(f"✓ Server has {len(tools)} tools available")

        result = await server.call_tool("case_info", {"case": "case14"})
        if result.get("rank") == 13:
            print("✓ case_info tool works")
        else:
            print(f"✗ case_info returned {result}")
            return False
        return True

    except Exception as e:
        print(f"✗ Server check failed: {e}")
        return False


async def main():
    """Run all checks."""
    print("=== stealth_grid Verification ===\n")

    deps_ok = check_dependencies()
    print()
    if not deps_ok:
        print("Install the dependencies first:")
        print("  pip install -r requirements.txt")
        return 1

    cases_ok = check_cases()
    print()

    toy_ok = check_toy_grid()
    print()

    server_ok = await check_server()
    print()

    # Summary
    print("=== Summary ===")
    if cases_ok and toy_ok and server_ok:
        print("✓ All checks passed.")
        print("\nTo run an experiment:")
        print("  stealth-grid lambda-sweep --case case30 --out lambda.csv")
        print("\nTo start the tool server:")
        print("  stealth-grid-server")
        return 0
    print("✗ Some checks failed. Please check the errors above.")
    return 1


if __name__ == "__main__":
    sys.exit(asyncio.run(main()))
