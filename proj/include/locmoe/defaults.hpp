// Copyright (c) 2026 The locmoe-lab Authors
// SPDX-License-Identifier: Apache-2.0
//
// Illustrative defaults for the cluster and cost models in one place. None of
// these are measurements; override them through the topology JSON or CLI.

#pragma once

namespace locmoe::defaults {

inline constexpr int kNodes = 2;
inline constexpr int kDevicesPerNode = 8;
inline constexpr double kIntraBandwidth = 100e9;  // bytes/s
inline constexpr double kInterBandwidth = 25e9;   // bytes/s
inline constexpr double kIntraLatency = 10e-6;    // s
inline constexpr double kInterLatency = 30e-6;    // s

inline constexpr double kTokenBytes = 4096.0;        // 2048-wide fp16 activation
inline constexpr double kFlopsPerToken = 6.7108864e7;  // 4 * 2048 * 8192 expert FFN
inline constexpr double kDeviceFlops = 320e12;       // fp16 peak
inline constexpr double kOverlapRatio = 0.5;
inline constexpr int kTpGroup = 8;

}  // namespace locmoe::defaults
