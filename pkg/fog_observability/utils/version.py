#!/usr/bin/env python
def get_version(package_name):
    # the installed distribution is assumed to be the one being imported
    try:
        from importlib.metadata import version
        return version(package_name)
    except Exception:
        return 'unknown'
