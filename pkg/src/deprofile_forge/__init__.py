"""Build de-identified simulated patient profiles from clinical and social-media corpora.

Modules, in pipeline order: ``corpus`` (ingestion), ``align`` (two-stage
matching), ``coc`` (Chain-of-Change memory), ``promptkit`` (prompts and
interviews), ``gateway`` (model clients), ``evalkit`` (metrics and reports)
and ``cli``.
"""

__version__ = "0.1.0"
