// Charts ten periods of ten streams against a shared median of 10 and
// prints each point with its adaptive limits.

#include <array>
#include <cstdio>
#include <random>

#include "csb_ewma/csb_ewma.hpp"

int main() {
    csb_ewma::ChartConfig cfg;
    cfg.k = 10;
    cfg.lambda = 0.2;
    cfg.L = 3.0;
    cfg.medians.assign(cfg.k, 10.0);

    csb_ewma::ChartMonitor chart(cfg);
    std::mt19937_64 rng(7);
    std::normal_distribution<double> in_control(10.0, 1.0);
    std::normal_distribution<double> shifted(11.0, 1.0);

    std::array<double, 10> sample{};
    for (int period = 1; period <= 20; ++period) {
        for (auto& y : sample) y = period <= 10 ? in_control(rng) : shifted(rng);
        const auto p = chart.push(sample);
        std::printf("t=%2llu C=%2u r=% .4f  [% .4f, % .4f]  %s\n", static_cast<unsigned long long>(p.t), p.c, p.r,
                    p.lcl, p.ucl, csb_ewma::to_string(p.signal).data());
    }
}
