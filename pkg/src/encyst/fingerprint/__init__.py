from .direction import (DegenerateLatent, PerturbDirection, latent_kl_per_dim,
                        select_perturb_dims)
from .boundary import (BoundarySearchConfig, NoBoundaryFound,
                       NoDisagreementFound, NoiseDistribution, flip_loss,
                       find_boundary_mu_bisect, find_boundary_mu_nes,
                       find_boundary_mu_substitutive)
from .filtering import (FilterDecision, SingletonClass, adaptive_threshold,
                        filter_smooth)
from .generate import (EncystedSample, FilterExhausted, generate_encysted,
                       pick_one)
from .pool import (FingerprintPair, FingerprintPool, FingerprintSet,
                   PoolExhausted, build_fingerprint_set)
from .builder import PoolBuilder, grow_pool, quantize
from .references import (NotEnoughReferences, dispersed_indices,
                         select_references)
from .screening import flip_matrix, screen_pool
