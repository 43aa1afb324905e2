"""Ego-graph coreset selection for node classification, verified end to end."""

from .bundle import (DiffusionMatrix, GraphBundle, NormalizedLaplacian,
                     add_random_edges, build_diffusion,
                     build_normalized_laplacian, homophily, ingest_bundle,
                     save_bundle)
from .compress import (CompressedCoreset, assemble_union, compress_coreset,
                       compress_stratum, coreset_training_graph, decompress,
                       stratum_rank)
from .ego import (EgoGraph, SpectralEgo, extract_diffusion_ego,
                  extract_standard_ego, receptive_field_check, spectral_ego,
                  training_spectral_egos)
from .gnn import (GnnModel, TrainConfig, TrainingGraph, evaluate, forward,
                  init_model, train, weighted_loss)
from .selection import (CoresetConfig, CoresetResult, LossDistanceOracle,
                        baseline_select, craig_linear_select,
                        facility_location_gain, facility_location_value,
                        giga_direction, scgiga_select, select_coreset,
                        sggc_select)
from .spectral import (EigenBasis, eig_dense, rsd_of_ego_embeddings,
                       spectral_decay_profile, spectral_response,
                       spectral_transform)
from .synth import random_bundle, sbm_bundle

__all__ = [name for name in dir() if not name.startswith("_")]
