pytest_plugins = [
    "tests.fixtures.charts",
    "tests.fixtures.norms",
    "tests.fixtures.contexts",
    "tests.fixtures.functions",
]
