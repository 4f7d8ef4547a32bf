"""UI module for Streamlit components.

This package contains all Streamlit-specific UI components.
The components are separated from the library (in core/) so that training,
verification and rendering stay usable from the command line and in tests.
"""

from .session_state import init_session_state, clear_run
from .run_view import render_manifest, render_stats, render_policy_view, render_verify
from .downloads import render_downloads, tables_to_excel

__all__ = [
    # Session state
    "init_session_state",
    "clear_run",
    # Run views
    "render_manifest",
    "render_stats",
    "render_policy_view",
    "render_verify",
    # Downloads
    "render_downloads",
    "tables_to_excel",
]
