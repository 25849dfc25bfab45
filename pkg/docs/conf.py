# oodbench documentation build configuration file.
#
# This file is execfile()d with the current directory set to its
# containing dir.

import os
import sys
from typing import Any

sys.path.insert(0, os.path.abspath("."))
sys.path.insert(0, os.path.abspath("../"))
from oodbench.version import FormatVersion, __version__  # noqa:E402

# -- Project information -----------------------------------------------------

project = "oodbench"
copyright = "2024, oodbench developers"
author = "oodbench developers"

# The short X.Y version
version = __version__
# The full version, including alpha/beta/rc tags
release = __version__

# -- General configuration ---------------------------------------------------

extensions = [
    "sphinx_design",
    "sphinx.ext.autodoc",
    "sphinx.ext.autosummary",
    "sphinx.ext.viewcode",
    "sphinx.ext.intersphinx",
    "sphinx.ext.napoleon",
    "sphinx.ext.githubpages",
]

source_suffix = ".rst"
master_doc = "index"
language = "en"
exclude_patterns = ["_build", "Thumbs.db", ".DS_Store"]
pygments_style = None

# -- Options for HTML output -------------------------------------------------

html_theme = "pydata_sphinx_theme"
html_theme_options = {
    "header_links_before_dropdown": 7,
    "navigation_with_keys": False,
}
html_sidebars: dict[str, list[str]] = {"index": []}
htmlhelp_basename = "oodbenchdoc"

# -- Options for LaTeX output ------------------------------------------------

latex_elements: dict[str, Any] = {}
latex_documents = [
    (master_doc, "oodbench.tex", "oodbench Documentation", author, "manual"),
]

# -- Options for manual page output ------------------------------------------

man_pages = [(master_doc, "oodbench", "oodbench Documentation", [author], 1)]

# -- Extension configuration -------------------------------------------------

intersphinx_mapping = {
    "python": ("https://docs.python.org/3", None),
    "numpy": ("https://numpy.org/doc/stable", None),
    "dateutil": ("https://dateutil.readthedocs.io/en/stable", None),
}

rst_epilog = f".. |format_version| replace:: {FormatVersion.DEFAULT_FORMAT_VERSION}"

nitpick_ignore = [
    ("py:class", "HREF"),
    ("py:class", "FloatArray"),
    ("py:class", "DetectorInput"),
    ("py:class", "jsonschema.validators.Draft7Validator"),
]
