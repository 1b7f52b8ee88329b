from setuptools import find_packages, setup

setup(name="sim2real-align",
      version="0.1.0",
      description=("Camera alignment, plane-constrained calibration, control "
                   "correction and task validation for sim-to-real digital "
                   "twins"),
      python_requires=">=3.8",
      install_requires=["numpy", "scipy", "click>=8.2", "requests"],
      packages=find_packages('src', exclude=['tests']),
      package_dir={'': 'src'},
      entry_points={'console_scripts': ["sim2real = sim2real.cli:main"]})
