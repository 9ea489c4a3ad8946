// Rough single-thread GEMM throughput probe; used to size training configs.
#include <chrono>
#include <cstdio>
#include <vector>

#include "gf/kernels.hpp"
#include "gf/rng.hpp"

using Clock = std::chrono::steady_clock;

int main() {
    gf::Rng rng(0);
    for (int64_t n : {64, 128, 192, 256, 512}) {
        std::vector<float> A(n * n), B(n * n), C(n * n);
        for (auto& x : A) x = static_cast<float>(rng.normal());
        for (auto& x : B) x = static_cast<float>(rng.normal());
        for (auto isa : {gf::kern::Isa::Scalar, gf::kern::Isa::Avx2}) {
            gf::kern::set_isa(isa);
            int reps = static_cast<int>(5e9 / (2.0 * n * n * n)) + 1;
            auto t0 = Clock::now();
            for (int r = 0; r < reps; ++r)
                gf::kern::gemm_nn(n, n, n, A.data(), B.data(), C.data(), false);
            double secs = std::chrono::duration<double>(Clock::now() - t0).count();
            double gflops = 2.0 * n * n * n * reps / secs / 1e9;
            std::printf("gemm_nn %-6s n=%-4lld reps=%-5d  %.1f GFLOP/s\n",
                        gf::kern::isa_name(gf::kern::active_isa()),
                        static_cast<long long>(n), reps, gflops);
        }
    }
    return 0;
}
