"""Decision-boundary fingerprinting toolkit for small image classifiers.

Subpackages:
    autodiff    -- dense/conv tensor engine with reverse-mode differentiation
    data        -- IDX loading, synthetic datasets, stratified splits
    models      -- classifier, disentangled VAE, VQ codebook, perceptual metric
    attacks     -- backdoor poisoning, pruning, fine-tuning, recon-error detector
    fingerprint -- latent boundary search, encysted samples, disposable pool
    verifyd     -- wire protocol, model/verification servers, verifying client
"""

__version__ = "0.1.0"
