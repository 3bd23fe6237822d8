"""Retrieval-context engine and synthetic navigation harness."""

from ._retnav import (  # noqa: F401
    CELL_METERS,
    CONTEXT_SIZE,
    DENSE_THRESHOLD,
    MMR_BETA,
    SHORTLIST_SIZE,
    SPARSE_THRESHOLD,
    AgentTrace,
    EmbeddingRecord,
    EmbedStore,
    Episode,
    GraphEdge,
    Metrics,
    Pose2,
    Scene,
    Shortlist,
    SimilarityGraph,
    argmax_select,
    build_graph,
    build_shortlist,
    compute_metrics,
    cosine,
    features,
    generate_dataset,
    geodesic,
    gumbel_select,
    l2_normalize,
    load_graph_json,
    load_scene_json,
    mmr_rerank,
    read_remb,
    retrieve_goal,
    run_agent,
    sample_episodes,
    save_graph_json,
    save_scene_json,
    shortest_path,
    step_reward,
    synth_scene,
    write_remb,
)

__all__ = [name for name in dir() if not name.startswith("_")]
