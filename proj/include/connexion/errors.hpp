#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace connexion {

enum class Errc {
    InvalidArgument,
    SumMismatch,
    DuplicatePole,
    NonRealResidue,
    EvalAtPole,
    LoopThroughPole,
    InvalidOrder,
    DuplicateRoot,
    StartAtPole,
    ZeroVelocity,
    NonRealResidues,
    PathThroughPole,
    ResonantOrLow,
    SeriesDivergence,
    AtPole,
    OutOfDomain,
    OutOfRange,
    SegmentOutsideChart,
    NotIncident,
    NotCriticalAtPole,
    PoleNotVertexZero,
    VertexResidueTooLow,
    NotFound,
    NonSimpleArc,
    TooFewCrossings,
    SeedNotPeriodic,
    ConfigError,
};

std::string_view to_string(Errc code);

/// Exception carrying one of the library error codes.
class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what)
        : std::runtime_error(std::string(to_string(code)) + ": " + what), code_(code) {}

    Errc code() const noexcept { return code_; }

private:
    Errc code_;
};

}  // namespace connexion
