"""
Run Viewer Streamlit App

Browse finished runs: evaluation summary, training curves, policy renders and the
oracle comparison. Runs are produced with ``python cli.py run``; nothing here trains.
"""

import streamlit as st

from core.errors import LexRLError
from core.experiment import find_runs, read_run
from ui import (
    init_session_state,
    clear_run,
    render_manifest,
    render_stats,
    render_policy_view,
    render_verify,
    render_downloads,
)

# Page config
st.set_page_config(
    page_title="Lexicographic RL runs",
    page_icon="🧭",
    layout="wide",
)

# Initialize session state
init_session_state()


def open_run(directory: str):
    """Load a run directory into session state."""
    try:
        st.session_state.run_record = read_run(directory)
        st.session_state.run_directory = directory
        st.session_state.run_error = None
    except LexRLError as e:
        st.session_state.run_record = None
        st.session_state.run_error = str(e)


# Title
st.title("🧭 Lexicographic RL runs")
st.markdown("Safety first, then the LTL objective, then discounted return")

# Sidebar for run selection
with st.sidebar:
    st.header("⚙️ Runs")

    runs_root = st.text_input(
        "Runs folder",
        value=st.session_state.runs_root,
        help="Folder searched (recursively) for run directories holding a manifest.json",
    )
    if runs_root != st.session_state.runs_root:
        st.session_state.runs_root = runs_root
        clear_run()

    runs = [str(path) for path in find_runs(st.session_state.runs_root)]
    if not runs:
        st.caption("⚠️ No runs found. Create one with `python cli.py run configs/toy_grid.json`.")
    else:
        st.caption(f"{len(runs)} runs found")
        current = st.session_state.run_directory
        selected = st.selectbox(
            "Run",
            options=runs,
            index=runs.index(current) if current in runs else 0,
        )
        if selected != current:
            st.session_state.mode_filter = None
            open_run(selected)

        st.button("🔄 Reload", on_click=open_run, args=(selected,), help="Re-read the run directory")

# Main content area
if st.session_state.run_error:
    st.error(f"Could not load run: {st.session_state.run_error}")

record = st.session_state.run_record
if record is None:
    st.info("Select a run in the sidebar.")
else:
    st.subheader(f"{record.manifest.get('name', 'run')} • {record.directory}")
    render_manifest(record)

    tab1, tab2, tab3, tab4 = st.tabs(["📈 Training", "🗺️ Policy", "✅ Oracle check", "⬇️ Downloads"])

    with tab1:
        render_stats(record)

    with tab2:
        policy = render_policy_view(record)

    with tab3:
        render_verify(record)

    with tab4:
        render_downloads(record, policy)

# Footer
st.divider()
st.caption("Lexicographic RL run viewer v1.0")
