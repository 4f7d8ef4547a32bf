"""Session state initialization and management.

This module provides functions for initializing and managing Streamlit session state.
"""

import streamlit as st

from core.config import DEFAULT_RUNS_ROOT


def init_session_state():
    """Initialize all session state variables with defaults."""
    # Where run directories are searched
    if "runs_root" not in st.session_state:
        st.session_state.runs_root = DEFAULT_RUNS_ROOT

    # run_directory: path of the run shown in the main area
    # run_record: RunRecord loaded from it (None until a run is opened)
    # run_error: message of the last failed load
    if "run_directory" not in st.session_state:
        st.session_state.run_directory = None
    if "run_record" not in st.session_state:
        st.session_state.run_record = None
    if "run_error" not in st.session_state:
        st.session_state.run_error = None

    # Policy table filters
    if "mode_filter" not in st.session_state:
        st.session_state.mode_filter = None
    if "only_randomized" not in st.session_state:
        st.session_state.only_randomized = False


def clear_run():
    """Forget the loaded run (e.g. after the runs root changed)."""
    st.session_state.run_directory = None
    st.session_state.run_record = None
    st.session_state.run_error = None
    st.session_state.mode_filter = None
