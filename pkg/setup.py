from setuptools import find_packages, setup

setup(
    name="finsler-audit",
    version="0.1.0",
    description="Finsler metric-measure calculus and inequality audits on small charts",
    packages=find_packages(exclude=["tests", "tests.*", "examples", "examples.*"]),
    package_data={"finsler_audit": ["presets/*.cfg"]},
    python_requires=">=3.9",
    install_requires=["numpy", "scipy>=1.12", "pandas", "pyyaml", "rich"],
    extras_require={"plots": ["matplotlib"]},
    entry_points={"console_scripts": ["finsler-audit=finsler_audit.cli:main"]},
)
