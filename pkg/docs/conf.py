# -*- coding: utf-8 -*-
#
# acms-harmonic documentation build configuration file

import sys
import os

# make the package importable for autodoc
sys.path.insert(0, os.path.abspath('../'))

# -- General configuration ------------------------------------------------

extensions = [
    'sphinx.ext.autodoc',
    'sphinx.ext.viewcode',
    'sphinx.ext.mathjax',
]

templates_path = ['_templates']
source_suffix = '.rst'
master_doc = 'index'

project = u'acms-harmonic'
copyright = u'2026, acms-harmonic contributors'

version = '0.1'
release = '0.1.0'

language = 'en'
exclude_patterns = ['_build']
pygments_style = 'sphinx'

# -- Options for HTML output ----------------------------------------------

html_theme = 'default'
html_static_path = ['_static']
htmlhelp_basename = 'acmsharmonicdoc'

# -- Options for LaTeX output ---------------------------------------------

latex_elements = {
}

latex_documents = [
  ('index', 'acms-harmonic.tex', u'acms-harmonic Documentation',
   u'acms-harmonic contributors', 'manual'),
]

# -- Options for manual page output ---------------------------------------

man_pages = [
    ('index', 'acms-harmonic', u'acms-harmonic Documentation',
     [u'acms-harmonic contributors'], 1)
]

# -- Options for Texinfo output -------------------------------------------

texinfo_documents = [
  ('index', 'acms-harmonic', u'acms-harmonic Documentation',
   u'acms-harmonic contributors', 'acms-harmonic',
   'Numerical checks for almost contact metric structures.', 'Miscellaneous'),
]
