#pragma once

#include <stdexcept>
#include <string>

namespace kb {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct DegenerateSeries : Error {
    using Error::Error;
};
struct NonMonotone : Error {
    using Error::Error;
};
struct DomainError : Error {
    using Error::Error;
};
struct RejectionExhausted : Error {
    using Error::Error;
};
struct LabelingFailed : Error {
    using Error::Error;
};
struct CompositionFailed : Error {
    using Error::Error;
};
struct IoError : Error {
    using Error::Error;
};
struct FormatError : Error {
    using Error::Error;
};
struct NoConvergence : Error {
    using Error::Error;
};
struct DegenerateInput : Error {
    using Error::Error;
};
struct ShapeMismatch : Error {
    using Error::Error;
};
struct GraphCycle : Error {
    using Error::Error;
};
struct ConfigError : Error {
    using Error::Error;
};
struct ChecksumError : Error {
    using Error::Error;
};
struct VersionError : Error {
    using Error::Error;
};
struct EmptyLabel : Error {
    using Error::Error;
};
struct NonFiniteLoss : Error {
    using Error::Error;
};

} // namespace kb
