// Benchmark: serial reference kernels vs the OpenMP variants, plus the
// alignment scoring path under both backends. Build target wsk_bench; not
// part of the test suite.

#include <cstdio>
#include <functional>
#include <vector>

#include <omp.h>

#include "wsk/align.hpp"
#include "wsk/kernels.hpp"
#include "wsk/rng.hpp"

using namespace wsk;
namespace k = wsk::kernels;

namespace {

double time_of(const std::function<void()>& fn, int iters) {
  fn();  // warm up
  const double t0 = omp_get_wtime();
  for (int i = 0; i < iters; ++i) fn();
  return (omp_get_wtime() - t0) / iters;
}

Tensor random_tensor(std::vector<std::size_t> shape, Rng& rng) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.normal();
  return t;
}

void report(const char* name, double serial_s, double par_s) {
  std::printf("%-28s serial %9.1f us   openmp %9.1f us   speedup %.2fx\n", name,
              serial_s * 1e6, par_s * 1e6, serial_s / par_s);
}

}  // namespace

int main() {
  std::printf("threads: %d\n", omp_get_max_threads());
  Rng rng(1);

  {
    const Tensor input = random_tensor({8, 64, 64}, rng);
    const Tensor filters = random_tensor({16, 8, 3, 3}, rng);
    const double ts = time_of([&] { k::serial::conv2d(input, filters, 1, 1); }, 20);
    const double tp = time_of([&] { k::par::conv2d(input, filters, 1, 1); }, 20);
    report("conv2d 8x64x64 -> 16", ts, tp);
    const Tensor up = random_tensor({16, 64, 64}, rng);
    const double gs =
        time_of([&] { k::serial::conv2d_grad(input, filters, up, 1, 1, true); }, 20);
    const double gp = time_of([&] { k::par::conv2d_grad(input, filters, up, 1, 1, true); }, 20);
    report("conv2d_grad 8x64x64", gs, gp);
  }
  {
    const Tensor input = random_tensor({3, 16, 16}, rng);
    const Tensor filters = random_tensor({8, 3, 3, 3}, rng);
    const double ts = time_of([&] { k::serial::conv2d(input, filters, 1, 1); }, 2000);
    const double tp = time_of([&] { k::par::conv2d(input, filters, 1, 1); }, 2000);
    report("conv2d 3x16x16 -> 8", ts, tp);
  }
  {
    const Tensor theta = random_tensor({64, 32, 3, 3}, rng);
    const Tensor phi = random_tensor({64, 32, 3, 3}, rng);
    k::set_backend(k::Backend::serial);
    const double ts = time_of([&] { align::score_deep_layer(2, theta, phi, true); }, 3);
    k::set_backend(k::Backend::parallel);
    const double tp = time_of([&] { align::score_deep_layer(2, theta, phi, true); }, 3);
    report("deep scoring 64x32 filters", ts, tp);
  }
  {
    const Tensor theta = random_tensor({16, 8, 3, 3}, rng);
    const Tensor phi = random_tensor({16, 8, 3, 3}, rng);
    k::set_backend(k::Backend::serial);
    const double ts = time_of([&] { align::score_deep_layer(2, theta, phi, true); }, 500);
    k::set_backend(k::Backend::parallel);
    const double tp = time_of([&] { align::score_deep_layer(2, theta, phi, true); }, 500);
    report("deep scoring 16x8 filters", ts, tp);
  }
  return 0;
}
