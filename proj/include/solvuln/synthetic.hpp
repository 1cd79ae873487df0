#pragma once

#include <cstdint>

#include "solvuln/corpus.hpp"

namespace solvuln {

/// Generator for a synthetic stand-in corpus with the same class sizes as the
/// published 2,217-contract dataset (RE 1218, IO 590, TD 312, DD 97).
///
/// Each contract is assembled from randomized Solidity fragments: shared
/// boilerplate (state, events, modifiers, benign functions), a vulnerable
/// function characteristic of its class, and optional "decoy" functions that
/// use another class's vocabulary safely (a checked delegatecall, SafeMath, a
/// timestamp that is only logged, a transfer after the state update). A
/// fraction `label_noise` of contracts carry the vulnerable pattern of a
/// different class than their label, modelling annotation disagreement; it
/// bounds the attainable accuracy at roughly 1 - label_noise.
struct SyntheticOptions {
    ClassCounts counts{97, 590, 1218, 312};  // DD, IO, RE, TD
    std::uint64_t seed = 2217;
    double label_noise = 0.08;
    double decoy_rate = 0.45;
};

Corpus generate_synthetic_corpus(const SyntheticOptions& options = {});

/// One contract whose vulnerable pattern is of class `pattern`.
std::string generate_contract_source(Label pattern, std::uint64_t seed, double decoy_rate = 0.45);

}  // namespace solvuln
