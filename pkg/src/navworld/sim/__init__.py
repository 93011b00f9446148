from .worldmap import (
    WorldMap,
    Landmark,
    SimError,
    UnreachableGoal,
    generate_map,
    step,
    shortest_path,
    geodesic_distance,
    ACTIONS,
    FORWARD_STEP,
    TURN_STEP,
    COLOR_TABLE,
    CATEGORIES,
)
from .render import Observation, render, render_view, KERNEL_BACKEND
from .episodes import Episode, SimConfig, generate_episode
from .store import save_episodes, load_episodes, FrameStore, StoreError
from . import tokenizer
