from setuptools import setup

setup(
    name="alpha-toolkit",
    version="1.2.0",
    description="Parse structured log files quickly",
    packages=["alpha"],
    install_requires=["click"],
)
