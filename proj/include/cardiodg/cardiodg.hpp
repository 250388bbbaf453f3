#pragma once

#include <cardiodg/dataio.hpp>
#include <cardiodg/dsp.hpp>
#include <cardiodg/error.hpp>
#include <cardiodg/eval/metrics.hpp>
#include <cardiodg/eval/report.hpp>
#include <cardiodg/eval/split.hpp>
#include <cardiodg/eval/stats.hpp>
#include <cardiodg/eval/stress.hpp>
#include <cardiodg/model.hpp>
#include <cardiodg/nn/graph.hpp>
#include <cardiodg/nn/ops.hpp>
#include <cardiodg/nn/params.hpp>
#include <cardiodg/nn/tensor.hpp>
#include <cardiodg/synth.hpp>
#include <cardiodg/train.hpp>
#include <cardiodg/version.hpp>
#include <cardiodg/xai.hpp>

namespace cardiodg {
inline constexpr const char *kVersion = "0.1.0";
}
