#pragma once

#include <cstdint>
#include <vector>

// Serial, double-precision reference implementations written as the most
// literal loops possible. They are independent of the OpenMP kernels and the
// autodiff graph, and are used as oracles in the tests and as the baseline in
// the kernel benchmark.

namespace lsenet::ref {

/// Naive quadruple-loop cross-correlation, zero padding.
std::vector<double> conv2d(const std::vector<double>& in, int H, int W, int Cin,
                           const std::vector<double>& w, int k, int Cout,
                           const std::vector<double>& bias, int pad, int OH,
                           int OW);

std::vector<double> maxpool(const std::vector<double>& in, int H, int W, int C,
                            int k);
std::vector<double> avgpool(const std::vector<double>& in, int H, int W, int C,
                            int k);

/// Direct per-output-pixel bilinear formula, align-corners=false.
std::vector<double> upsample_bilinear(const std::vector<double>& in, int h,
                                      int w, int C, int f);

std::vector<double> matvec(const std::vector<double>& in, int Din,
                           const std::vector<double>& w, int Dout,
                           const std::vector<double>& bias);

}  // namespace lsenet::ref
