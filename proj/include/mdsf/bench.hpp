#pragma once

#include "mdsf/losses.hpp"
#include "mdsf/tensor.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace mdsf {

/// softmax(Q K^T / sqrt(c)) V over all L tokens. Every query meets every key
/// (L^2 scores); queries and keys are tiled with a running softmax so the
/// working set stays in cache. q, k, v are [L, c].
RowMatrix dense_attention(const RowMatrix& q, const RowMatrix& k, const RowMatrix& v, Index query_block = 64,
                          Index key_block = 512);

struct ScanBenchRow {
  Index length = 0;
  double scan_ns = 0.0;  // median over reps
  double attn_ns = 0.0;
};

/// Times selective_scan (no graph) and `dense_attention` on random token
/// sequences of each length; single-threaded.
std::vector<ScanBenchRow> run_scan_bench(const std::vector<Index>& lengths, int reps, std::uint64_t seed,
                                         Index channels = 16, Index state_size = 8);

std::string scan_bench_csv(const std::vector<ScanBenchRow>& rows);

enum class SurfaceLoss { SAWIoU, NWD, CIoU };
SurfaceLoss parse_surface_loss(const std::string& name);

struct SurfaceRow {
  double offset = 0.0;     // c_x(pred) - c_x(target)
  double loss = 0.0;
  double grad_cx = 0.0;    // central difference of the loss in c_x
  double iou_grad_cx = 0.0;  // central difference of 1 - IoU in c_x
};

/// Sweeps the predicted centre along x from `range` down to 0 (toward the
/// target) in `steps` + 1 points. Target (0.5, 0.5, 0.03, 0.03); the
/// prediction has the target's size.
std::vector<SurfaceRow> loss_surface(SurfaceLoss kind, int steps = 60, double range = 0.3,
                                     const LossConfig& cfg = {});

std::string surface_csv(const std::vector<SurfaceRow>& rows);

/// Central difference of f at x with step 1e-5 * max(1, |x|).
double central_difference(const std::function<double(double)>& f, double x);

}  // namespace mdsf
