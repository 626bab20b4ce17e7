#include "connexion/errors.hpp"

namespace connexion {

std::string_view to_string(Errc code) {
    switch (code) {
        case Errc::InvalidArgument: return "InvalidArgument";
        case Errc::SumMismatch: return "SumMismatch";
        case Errc::DuplicatePole: return "DuplicatePole";
        case Errc::NonRealResidue: return "NonRealResidue";
        case Errc::EvalAtPole: return "EvalAtPole";
        case Errc::LoopThroughPole: return "LoopThroughPole";
        case Errc::InvalidOrder: return "InvalidOrder";
        case Errc::DuplicateRoot: return "DuplicateRoot";
        case Errc::StartAtPole: return "StartAtPole";
        case Errc::ZeroVelocity: return "ZeroVelocity";
        case Errc::NonRealResidues: return "NonRealResidues";
        case Errc::PathThroughPole: return "PathThroughPole";
        case Errc::ResonantOrLow: return "ResonantOrLow";
        case Errc::SeriesDivergence: return "SeriesDivergence";
        case Errc::AtPole: return "AtPole";
        case Errc::OutOfDomain: return "OutOfDomain";
        case Errc::OutOfRange: return "OutOfRange";
        case Errc::SegmentOutsideChart: return "SegmentOutsideChart";
        case Errc::NotIncident: return "NotIncident";
        case Errc::NotCriticalAtPole: return "NotCriticalAtPole";
        case Errc::PoleNotVertexZero: return "PoleNotVertexZero";
        case Errc::VertexResidueTooLow: return "VertexResidueTooLow";
        case Errc::NotFound: return "NotFound";
        case Errc::NonSimpleArc: return "NonSimpleArc";
        case Errc::TooFewCrossings: return "TooFewCrossings";
        case Errc::SeedNotPeriodic: return "SeedNotPeriodic";
        case Errc::ConfigError: return "ConfigError";
    }
    return "Unknown";
}

}  // namespace connexion
