#pragma once

// Stacking samples into training batches and the deterministic batch schedule.

#include <cstdint>
#include <vector>

#include "inpaint/dataset.hpp"
#include "inpaint/tensor.hpp"

namespace inpaint {

struct Batch {
  Tensor image;       // [N,3,H,W] in [-1,1]
  Tensor gray;        // [N,1,H,W] in [0,1]
  Tensor edges;       // [N,1,H,W] binary ground-truth edges
  Tensor mask_paper;  // [N,1,H,W], 1 = hole

  std::size_t size() const { return image.dim(0); }
};

/// Throws ShapeError if the samples differ in extent or `indices` is empty.
Batch make_batch(const std::vector<Sample>& samples, const std::vector<std::size_t>& indices);

/// Indices of the batch used at `step`: epochs walk a seeded permutation of
/// [0, n) in order, so the schedule depends only on (n, batch, step, seed).
std::vector<std::size_t> batch_indices(std::size_t n, std::size_t batch, std::int64_t step, std::uint64_t seed);

}  // namespace inpaint
