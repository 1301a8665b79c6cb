#pragma once

#include "fwmerge/checkpoint_pool.hpp"
#include "fwmerge/param_set.hpp"

namespace fwmerge {

struct TiesConfig {
    double density = 1.0;  // fraction of largest-magnitude task-vector entries kept
    double scaling = 1.0;  // lambda applied to the merged task vector
};

// Element-wise mean of all checkpoints, streamed one at a time.
ParamSet weight_average(const CheckpointPool& pool);

// theta0 + lambda * sum_i (theta_i - theta0), streamed.
ParamSet task_arithmetic(const ParamSet& theta0, const CheckpointPool& pool, double lambda);

// Trim each task vector to its top `density` fraction by magnitude, elect
// a per-coordinate sign by summed magnitude (ties go positive), average
// the sign-aligned survivors, then apply theta0 + scaling * merged vector.
// Needs every task vector at once, so residency grows with the pool.
ParamSet ties_merge(const ParamSet& theta0, const CheckpointPool& pool, const TiesConfig& cfg);

}  // namespace fwmerge
