"""Run views: manifest summary, training curves, policy renders and the verify report."""

from typing import Optional

import pandas as pd
import streamlit as st

from core.experiment import RunRecord
from core.render import policy_table

CURVES = {
    "Return": ["mean_return"],
    "Satisfaction": ["safety_frequency", "buchi_frequency"],
    "Schedules": ["alpha", "epsilon", "upsilon", "tau_safety", "tau_ltl"],
    "Action sets": ["mean_safe_set", "mean_ltl_set"],
}


def render_manifest(record: RunRecord):
    """Headline metrics of the final evaluation plus the raw manifest."""
    manifest = record.manifest
    evaluation = manifest.get("evaluation", {})
    product = manifest.get("product", {})

    col1, col2, col3, col4 = st.columns(4)
    col1.metric(
        "Mean return",
        f"{evaluation.get('mean_return', 0.0):.3f}",
        help=f"± {evaluation.get('stderr_return', 0.0):.3f} (standard error)",
    )
    col2.metric("Safety frequency", f"{evaluation.get('safety_frequency', 0.0):.4f}")
    col3.metric("Büchi frequency", f"{evaluation.get('buchi_frequency', 0.0):.4f}")
    col4.metric("Product states", f"{product.get('states', 0)} / {product.get('full_size', 0)}")

    st.caption(
        f"Config hash {manifest.get('config_hash', '?')[:12]} • seed {manifest.get('seed')} • "
        f"{evaluation.get('episodes', 0)} evaluation episodes of {evaluation.get('horizon', 0)} steps"
    )
    with st.expander("Manifest", expanded=False):
        st.json(manifest)


def render_stats(record: RunRecord):
    if record.stats is None or record.stats.empty:
        st.info("This run has no training statistics.")
        return
    frame = record.stats.set_index("episode")
    for title, columns in CURVES.items():
        present = [c for c in columns if c in frame.columns]
        if present:
            st.markdown(f"**{title}**")
            st.line_chart(frame[present])


def _is_randomized(group: pd.DataFrame) -> bool:
    return (group["probability"] > 0).sum() > 1


def render_policy_view(record: RunRecord) -> Optional[pd.DataFrame]:
    """Show the renders and a filterable policy table; returns the table for downloads."""
    if record.policy is None:
        st.info("This run has no policy export.")
        return None

    if record.render_svg is not None:
        st.markdown(record.render_svg, unsafe_allow_html=True)
    if record.render_text is not None:
        with st.expander("ASCII render", expanded=record.render_svg is None):
            st.code(record.render_text, language=None)

    table = policy_table(record.policy)
    modes = sorted({(int(r.q_safety), int(r.q_ltl)) for r in table.itertuples()})

    col1, col2 = st.columns([3, 1])
    choice = col1.selectbox(
        "Automaton mode (q_safety, q_ltl)",
        options=[None] + modes,
        format_func=lambda m: "all modes" if m is None else f"q_safety={m[0]} q_ltl={m[1]}",
        key="mode_filter",
    )
    only_randomized = col2.checkbox(
        "Randomized states only",
        key="only_randomized",
        help="States where the policy mixes more than one action",
    )

    shown = table
    if choice is not None:
        shown = shown[(shown["q_safety"] == choice[0]) & (shown["q_ltl"] == choice[1])]
    if only_randomized:
        mixed = shown.groupby("state").filter(_is_randomized)
        shown = mixed
    st.dataframe(shown, use_container_width=True, hide_index=True)
    return table


def render_verify(record: RunRecord):
    """Oracle comparison written by ``cli.py verify``."""
    report = record.verify
    if report is None:
        st.info("No verify report yet. Run `python cli.py verify <config> --checkpoint <run>/checkpoint.json`.")
        return

    oracle = report["oracle"]
    greedy = report["greedy_policy"]
    agreement = report["agreement"]

    col1, col2, col3 = st.columns(3)
    col1.metric("Optimal return", f"{oracle['max_return']:.3f}")
    col2.metric("Greedy policy return", f"{greedy['return']:.3f}", delta=f"{-report['return_gap']:.3f}")
    col3.metric("Pr(safe) optimal / greedy", f"{oracle['pr_safety']:.3f} / {greedy['safety_prob']:.3f}")

    def share(value):
        return "n/a" if value is None else f"{100 * value:.1f}%"

    st.markdown(
        f"Action-set agreement on states visited ≥ {agreement['min_visits']} times "
        f"({agreement['frequent_states']} states): safe sets **{share(agreement['safe_agreement_frequent'])}**, "
        f"LTL sets **{share(agreement['ltl_agreement_frequent'])}**"
    )
    if agreement["disagreements"]:
        with st.expander(f"Disagreements ({len(agreement['disagreements'])})"):
            st.dataframe(pd.DataFrame(agreement["disagreements"]), hide_index=True)
    else:
        st.success("Learned action sets match the oracle on every frequently visited state.")
