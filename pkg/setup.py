#!/usr/bin/env python3
"""
Setup script for installing the stealth-grid package.
"""

from pathlib import Path

from setuptools import find_packages, setup

# Read the README file
readme_file = Path(__file__).parent / "README.md"
long_description = readme_file.read_text(encoding="utf-8") if readme_file.exists() else ""

# Read requirements
requirements_file = Path(__file__).parent / "requirements.txt"
requirements = []
if requirements_file.exists():
    requirements = [line for line in requirements_file.read_text().strip().split("\n") if line and not line.startswith("#")]

setup(
    name="stealth-grid",
    version="1.0.0",
    description="Generalized stealth data injection attacks on power-grid state estimation",
    long_description=long_description,
    long_description_content_type="text/markdown",
    author="Stealth Grid Project",
    python_requires=">=3.9",
    packages=find_packages(include=["stealth_grid", "stealth_grid.*"]),
    package_data={"stealth_grid": ["cases/*.m"]},
    install_requires=requirements,
    entry_points={
        "console_scripts": [
            "stealth-grid=stealth_grid.experiment_cli:main",
            "stealth-grid-server=stealth_grid.attack_server:main",
        ],
    },
    classifiers=[
        "Development Status :: 4 - Beta",
        "Intended Audience :: Science/Research",
        "License :: OSI Approved :: MIT License",
        "Programming Language :: Python :: 3",
        "Programming Language :: Python :: 3.9",
        "Programming Language :: Python :: 3.10",
        "Programming Language :: Python :: 3.11",
        "Programming Language :: Python :: 3.12",
        "Topic :: Scientific/Engineering :: Mathematics",
        "Topic :: Security",
    ],
    keywords=["power-systems", "state-estimation", "data-injection", "information-theory", "matpower"],
    extras_require={
        "dev": [
            "pytest>=6.0",
            "pytest-asyncio>=0.21.0",
            "black>=23.0.0",
            "isort>=5.12.0",
            "mypy>=1.0.0",
            "flake8>=6.0.0",
        ],
    },
)
