from pathlib import Path

from setuptools import find_packages, setup

requirements = [
    line.strip()
    for line in Path(__file__).with_name("requirements.txt").read_text().splitlines()
    if line.strip() and not line.startswith(("z3-solver", "pytest"))
]

setup(
    name="cbcforge",
    version="0.1.0",
    packages=find_packages(include=["cbcforge"]),
    install_requires=requirements,
    python_requires=">=3.8",
    entry_points={"console_scripts": ["cbcforge=cbcforge.cli:main"]},
)
