// Copyright (c) 2026 The locmoe-lab Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <numbers>

#include <boost/math/quadrature/tanh_sinh.hpp>
#include <gtest/gtest.h>

#include "locmoe/quadrature.hpp"

TEST(Quadrature, SmoothIntegrands) {
    EXPECT_NEAR(locmoe::integrate([](double x) { return std::sin(x); }, 0.0, std::numbers::pi), 2.0, 1e-13);
    EXPECT_NEAR(locmoe::integrate([](double x) { return std::exp(x); }, 0.0, 1.0), std::numbers::e - 1.0, 1e-13);
    EXPECT_EQ(locmoe::integrate([](double x) { return x; }, 1.0, 1.0), 0.0);
}

TEST(Quadrature, ReversedBoundsFlipSign) {
    auto f = [](double x) { return x * x; };
    EXPECT_NEAR(locmoe::integrate(f, 2.0, 0.0), -8.0 / 3.0, 1e-13);
}

TEST(Quadrature, EndpointSingularity) {
    EXPECT_NEAR(locmoe::integrate([](double x) { return std::sqrt(x); }, 0.0, 1.0), 2.0 / 3.0, 1e-10);
}

TEST(Quadrature, PowersOfSineMatchTanhSinh) {
    boost::math::quadrature::tanh_sinh<double> ts;
    for (int k : {1, 6, 18, 62}) {
        auto f = [k](double t) { return std::pow(std::sin(t), k); };
        for (double hi : {0.3, 1.0, std::numbers::pi / 2}) {
            EXPECT_NEAR(locmoe::integrate(f, 0.0, hi), ts.integrate(f, 0.0, hi), 1e-13) << k << " " << hi;
        }
    }
}
