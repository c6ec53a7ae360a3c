#!/usr/bin/env python

from setuptools import find_packages, setup


def main():

    reqs = ['matplotlib',
            'numpy',
            'termcolor',
            'tqdm',
            'omegaconf==2.3.0',
            'psutil']

    odlc_version = "0.3.0"

    package_data = {
        "fog_observability": [
            "cfg/base/*.yaml", "cfg/profiles/*.yaml",
            "cfg/scenarios/*.yaml", "cfg/schedules/*.txt",
            "cfg/regions/*.jsonl",
        ]
    }

    setup(
        name='fog_observability',
        version=odlc_version,
        description='Observability data life cycle for fog computing: edge agent, fog node, archive and replay rig',
        author='Fog observability team',
        entry_points={"console_scripts": ["odlc=fog_observability.main:main"]},
        license='MIT',
        packages=find_packages(exclude=['tests']),
        install_requires=reqs,
        extras_require={'test': ['pytest']},
        python_requires='>=3.8',
        zip_safe=False,
        package_data=package_data
    )


if __name__ == '__main__':
    main()
