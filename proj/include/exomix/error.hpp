#pragma once

#include <stdexcept>
#include <string>

namespace exomix {

// Broad failure classes; the CLI maps each to a distinct exit status.
enum class ErrorKind { config, data, estimation, io };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

#define EXOMIX_DEFINE_ERROR(Name, Kind)                                  \
    class Name : public Error {                                          \
    public:                                                              \
        explicit Name(const std::string& what) : Error(Kind, what) {}    \
    };

// configuration / preconditions
EXOMIX_DEFINE_ERROR(InvalidOptions, ErrorKind::config)
EXOMIX_DEFINE_ERROR(InvalidBandwidth, ErrorKind::config)

// input data
EXOMIX_DEFINE_ERROR(DegenerateSample, ErrorKind::data)
EXOMIX_DEFINE_ERROR(DegenerateWeights, ErrorKind::data)
EXOMIX_DEFINE_ERROR(InvalidData, ErrorKind::data)
EXOMIX_DEFINE_ERROR(LengthMismatch, ErrorKind::data)
EXOMIX_DEFINE_ERROR(SchemaMismatch, ErrorKind::data)
EXOMIX_DEFINE_ERROR(DuplicateKey, ErrorKind::data)
EXOMIX_DEFINE_ERROR(ParseError, ErrorKind::data)
EXOMIX_DEFINE_ERROR(EmptyResult, ErrorKind::data)
EXOMIX_DEFINE_ERROR(ExcessiveMissingness, ErrorKind::data)

// estimation
EXOMIX_DEFINE_ERROR(EstimationFailure, ErrorKind::estimation)
EXOMIX_DEFINE_ERROR(AmbiguousLabeling, ErrorKind::estimation)
EXOMIX_DEFINE_ERROR(EmptySelection, ErrorKind::estimation)
EXOMIX_DEFINE_ERROR(DegenerateRegressor, ErrorKind::estimation)
EXOMIX_DEFINE_ERROR(InsufficientData, ErrorKind::estimation)
EXOMIX_DEFINE_ERROR(CollinearFixedEffects, ErrorKind::estimation)
EXOMIX_DEFINE_ERROR(TooManyFailedReplicates, ErrorKind::estimation)
EXOMIX_DEFINE_ERROR(NoQualifyingWindow, ErrorKind::estimation)

// files
EXOMIX_DEFINE_ERROR(IoError, ErrorKind::io)

#undef EXOMIX_DEFINE_ERROR

} // namespace exomix
