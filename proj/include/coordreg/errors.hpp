#pragma once

#include <stdexcept>
#include <string>

namespace coordreg {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct BadParam : Error { using Error::Error; };
struct DimensionMismatch : Error { using Error::Error; };
struct RankDeficient : Error { using Error::Error; };
struct NoConvergence : Error { using Error::Error; };
struct TopologyViolation : Error { using Error::Error; };
struct RejectionBudget : Error { using Error::Error; };
struct SketchFailure : Error { using Error::Error; };
struct SamplerOverflow : Error { using Error::Error; };
struct LeverageTooLarge : Error { using Error::Error; };
struct IoError : Error { using Error::Error; };

}  // namespace coordreg
