"""Python surface of the graph pooling benchmark engine.

Everything is re-exported from the compiled extension module: graph loaders
and statistics, pooling primitives and their regularizers, perturbations,
split generators, evaluation metrics, and the config-driven experiment
runner.
"""

try:  # installed-package layout: extension lives inside this package
    from ._gpbench import *  # noqa: F401,F403
    from ._gpbench import __doc__ as _core_doc  # noqa: F401
    from ._gpbench import __version__  # noqa: F401
except ImportError:  # in-tree build layout: extension sits on PYTHONPATH
    from _gpbench import *  # noqa: F401,F403
    from _gpbench import __doc__ as _core_doc  # noqa: F401
    from _gpbench import __version__  # noqa: F401
