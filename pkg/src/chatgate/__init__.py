"""Group messaging with selective chatbot access and sender anonymity.

The package layers a hash-derivation ratchet tree (continuous group key
agreement) under a chatbot channel protocol: users share a group key through
the tree, while each chatbot in the group holds only a single group public
key and receives per-message keys solely for the messages that match its
registered trigger. Extensions conceal which chatbots were addressed and let
users talk to chatbots under unlinkable pseudonyms.

Modules:
    primitives  -- crypto: sealed boxes, signing, symmetric AEAD, derivation
    tree        -- left-balanced binary ratchet tree with blank nodes
    cgka        -- group key agreement state machine over the tree
    triggers    -- chatbot trigger rules and their signed canonical form
    group       -- user / chatbot protocol state and message bundles
    provider    -- simulated service provider: PKI, sequencer, transcript
    harness     -- scenario runner, security probes, benchmarks, CLI
"""

__version__ = "0.1.0"
