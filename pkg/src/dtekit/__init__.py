"""dtekit: desk-scale two-stage triphone-embedding acoustic modeling.

Pipeline: synthetic (or converted) corpus -> MFCC front-end -> tied-state
triphone HMM-GMM training and forced alignment -> first-stage network on
context windows -> PCA/LDA-projected last-hidden embeddings -> second-stage
network on embeddings plus raw center frames -> hybrid phone-loop Viterbi
decoding with a bigram phone LM -> framewise and edit-distance scoring.
"""

__version__ = "0.1.0"
