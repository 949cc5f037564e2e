"""Localized non-rigid deformation of triangle meshes.

Per-face learned features on a neutral mesh are combined with a spectrally
aggregated global deformation code; a generator maps the combined feature
field to per-face Jacobians that a Poisson solve integrates into a smooth
displacement field. Masking the code per face confines deformations to
chosen regions, which makes interpolation, pose mixing, statistics and
motion transfer local operations.
"""

from .autodiff import Tensor, gradcheck, no_grad
from .latent import (LocalityProfile, Mask, PoseBank, build_pose_bank,
                     interpolate, interpolation_sequence, locality_profile,
                     mean_pose, mix, partial_deform, pca_poses, transfer)
from .mesh import (Mesh, MeshError, face_areas, face_graph_distance,
                   face_normals, load_mesh, procrustes_align, save_mesh)
from .model import (FeatureField, LatentCode, ModelConfig, ModelParams,
                    aggregate_spectral, assemble, encode_deformation,
                    extract_features, generate, predict)
from .operators import (EigenBasis, JacobianField, SolverError, SparseOperator,
                        cotangent_laplacian, eigenbasis, face_gradient,
                        jacobians_from_displacement, lumped_mass,
                        mesh_operators, poisson_solve, restrict_jacobian)
from .synth import PoseDataset, load_dataset, save_dataset, synth_dataset
from .training import (TrainConfig, TrainingDiverged, normal_loss,
                       reconstruction_loss, total_loss, train)

__version__ = "0.1.0"
