"""Robot-centric symbolic knowledge about household objects.

Measurement records (simulated or ingested) are turned into physical and
functional property scalars, clustered into qualitative symbols, folded into
class-level concepts and stored as JSON.
"""
from .analysis import analyze, isomap, kmeans
from .geometry import PointCloud, bounding_box, flatness_ratio, marker_depth_ratio, ransac_plane
from .properties import derive_functional, extract_physical, normalize
from .sensing import ObjectSpec, ingest_dataset, simulate_record
from .symbols import BuildConfig, KnowledgeBase, build_kb, conceptualize, load_kb, save_kb, subcategorize

__version__ = "0.1.0"
