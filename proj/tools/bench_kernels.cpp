// Microbenchmarks for the dense kernels, serial reference against the OpenMP
// variants, plus one end-to-end training-step benchmark. Build requires google
// benchmark; the CMake target is skipped when the package is absent.

#include <cstddef>
#include <vector>

#include <benchmark/benchmark.h>

#include "mimo/common.hpp"
#include "mimo/data.hpp"
#include "mimo/kernels.hpp"
#include "mimo/model.hpp"
#include "mimo/train.hpp"

namespace {

using namespace mimo;

std::vector<double> random_block(std::size_t n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<double> v(n);
    for (double& x : v) x = 2.0 * rng.uniform() - 1.0;
    return v;
}

template <typename Kernel>
void bench_gemm(benchmark::State& state, Kernel kernel) {
    const std::size_t m = static_cast<std::size_t>(state.range(0));
    const std::size_t k = static_cast<std::size_t>(state.range(1));
    const std::size_t n = static_cast<std::size_t>(state.range(2));
    const std::vector<double> a = random_block(m * k, 1);
    const std::vector<double> b = random_block(k * n, 2);
    std::vector<double> c(m * n, 0.0);
    for (auto _ : state) {
        kernel(a.data(), b.data(), c.data(), m, k, n, false);
        benchmark::DoNotOptimize(c.data());
        benchmark::ClobberMemory();
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) *
                            static_cast<std::int64_t>(2 * m * k * n));
}

void gemm_nn_serial(benchmark::State& s) { bench_gemm(s, kernels::gemm_nn_serial); }
void gemm_nn_parallel(benchmark::State& s) { bench_gemm(s, kernels::gemm_nn_parallel); }
void gemm_nt_serial(benchmark::State& s) { bench_gemm(s, kernels::gemm_nt_serial); }
void gemm_nt_parallel(benchmark::State& s) { bench_gemm(s, kernels::gemm_nt_parallel); }
void gemm_tn_serial(benchmark::State& s) { bench_gemm(s, kernels::gemm_tn_serial); }
void gemm_tn_parallel(benchmark::State& s) { bench_gemm(s, kernels::gemm_tn_parallel); }

template <typename Kernel>
void bench_softmax(benchmark::State& state, Kernel kernel) {
    const std::size_t rows = static_cast<std::size_t>(state.range(0));
    const std::size_t cols = static_cast<std::size_t>(state.range(1));
    const std::vector<double> in = random_block(rows * cols, 3);
    std::vector<double> out(rows * cols, 0.0);
    for (auto _ : state) {
        kernel(in.data(), out.data(), rows, cols);
        benchmark::DoNotOptimize(out.data());
        benchmark::ClobberMemory();
    }
    state.SetItemsProcessed(static_cast<std::int64_t>(state.iterations()) *
                            static_cast<std::int64_t>(rows * cols));
}

void softmax_serial(benchmark::State& s) { bench_softmax(s, kernels::softmax_rows_serial); }
void softmax_parallel(benchmark::State& s) {
    bench_softmax(s, kernels::softmax_rows_parallel);
}

void train_step(benchmark::State& state) {
    const Dataset data = gen_blobs(256, 4, 2, 3.0, 1, Split::train);
    NetworkConfig cfg;
    cfg.architecture = Architecture::mimo;
    cfg.task = Task::classification;
    cfg.ensemble_size = 3;
    cfg.input_dim = 2;
    cfg.hidden_widths = {static_cast<std::size_t>(state.range(0))};
    cfg.output_dim = 4;
    cfg.init_seed = 1;
    SamplingConfig sampling;
    sampling.batch_size = 32;
    sampling.ensemble_size = 3;
    sampling.seed = 1;
    OptimizerConfig opt;
    opt.learning_rate = 0.1;
    opt.steps = 1;
    Network net = build_network(cfg);
    for (auto _ : state) {
        net = train(std::move(net), data, sampling, opt).network;
        benchmark::DoNotOptimize(net.parameters.data());
    }
}

} // namespace

BENCHMARK(gemm_nn_serial)->Args({64, 64, 64})->Args({128, 128, 128})->Args({32, 2, 128});
BENCHMARK(gemm_nn_parallel)->Args({64, 64, 64})->Args({128, 128, 128})->Args({32, 2, 128});
BENCHMARK(gemm_nt_serial)->Args({64, 64, 64})->Args({128, 128, 128});
BENCHMARK(gemm_nt_parallel)->Args({64, 64, 64})->Args({128, 128, 128});
BENCHMARK(gemm_tn_serial)->Args({64, 64, 64})->Args({128, 128, 128});
BENCHMARK(gemm_tn_parallel)->Args({64, 64, 64})->Args({128, 128, 128});
BENCHMARK(softmax_serial)->Args({1024, 4})->Args({4096, 16});
BENCHMARK(softmax_parallel)->Args({1024, 4})->Args({4096, 16});
BENCHMARK(train_step)->Arg(32)->Arg(128);

BENCHMARK_MAIN();
