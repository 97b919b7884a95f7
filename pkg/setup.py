from setuptools import setup, find_packages

with open('README.md') as readme_file:
    readme = readme_file.read()

setup(
    name='rebmbo',
    version='0.1.0',
    author='Multiple Authors',
    python_requires='>=3.8',
    classifiers=[
        'Development Status :: 2 - Pre-Alpha',
        'Intended Audience :: Science/Research',
        'License :: OSI Approved :: Apache Software License',
        'Natural Language :: English',
        'Programming Language :: Python :: 3',
        'Programming Language :: Python :: 3.8',
        'Topic :: Scientific/Engineering :: Mathematics',
    ],
    description='Black-box optimization with GP surrogates, an energy-based model and a PPO planner.',
    packages=find_packages(exclude=["test"]),
    license="Apache Software License 2.0",
    long_description=readme,
    install_requires=[
        "numpy>=1.20",
        "scipy>=1.7",
        "pyyaml>=5",
        "pandas",
        "jinja2",
        "rich",
    ],
    entry_points={"console_scripts": ["rebmbo=rebmbo.cli:main"]},
    package_data={"": [
        "templates/*.jinja",
    ]}
)
