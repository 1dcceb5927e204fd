from setuptools import setup

setup(
    name="tinyrepo",
    version="0.3.1",
    description="A tiny demonstration package",
    packages=["tinyrepo"],
    install_requires=["requests>=2.0"],
    python_requires=">=3.9",
)
