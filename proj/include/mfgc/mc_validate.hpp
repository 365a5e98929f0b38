#pragma once

#include "mfgc/mfg_system.hpp"

#include <cstdint>
#include <vector>

namespace mfgc {

/// Euler-Maruyama simulation of dX = -(DpH_lambda(X, Q) + b_lambda(X)) dt + sqrt(2) dW on the torus.
struct SDEConfig {
    std::int64_t paths = 100000;
    std::uint64_t seed = 1;
    /// SDE steps per solver step (dt_sde = dt / substeps).
    int substeps = 4;
    /// Independent batches (paths split evenly); each owns the sub-stream seeded by (seed, batch index).
    int batches = 16;
    /// Worker threads (0 = hardware concurrency). Results do not depend on it.
    int threads = 0;

    void validate() const;
};

struct MCEstimate {
    /// Cloud-in-cell density on every solver slice, each integrating to 1.
    SpaceTimeField density;
    /// Per-slice h^d sum_j SE_j, with SE_j the batch standard error of the node density.
    std::vector<double> noise_floor;
    int batches = 0;
};

MCEstimate simulate(const MFGProblem& problem, const LambdaData& data, const SolutionPair& pair, const SDEConfig& cfg);

SpaceTimeField simulate_density(const MFGProblem& problem, const LambdaData& data, const SolutionPair& pair,
                                const SDEConfig& cfg);

/// int |a - b| dx per slice.
std::vector<double> l1_distance(const SpaceTimeField& a, const SpaceTimeField& b);

}  // namespace mfgc
