from setuptools import setup, find_packages
from typing import List

HYPHEN_E_DOT = '-e .'


def get_requirements(filename: str) -> List[str]:
    with open(filename) as f:
        requirements = [req.strip() for req in f.readlines()]
        requirements = [req for req in requirements if req and not req.startswith('#')]
        if HYPHEN_E_DOT in requirements:
            requirements.remove(HYPHEN_E_DOT)
        return requirements


setup(
    name="Zebrafish Event Counting Pipeline",
    version='0.1.0',
    author="Shubham Gupta",
    author_email="shubhamgupta2048@gmail.com",
    packages=find_packages(exclude=["tests"]),
    install_requires=get_requirements('requirements.txt'),
    entry_points={
        "console_scripts": ["zfcount=src.cli.commands:entry"],
    },
)
