"""simflock: orchestrate ensembles of external simulation trials.

Kept import-light on purpose: the demo simulator executables import this
package and must start fast, so nothing heavy (numpy, scipy) is pulled in
here. Import the submodules you need directly.
"""

__version__ = "0.1.0"
