import importlib
import pkgutil


def iter_namespace(ns_pkg):
    # absolute module names, so import_module works without a package argument
    return pkgutil.iter_modules(ns_pkg.__path__, ns_pkg.__name__ + ".")


def discover_plugins(ns_pkg):
    """Imports every module of `ns_pkg`; importing is what registers their commands."""
    return {
        name: importlib.import_module(name)
        for _, name, _ in iter_namespace(ns_pkg)
    }
