#pragma once

#include <stdexcept>
#include <string>

namespace sgs {

struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct NonFiniteError : Error { using Error::Error; };
struct DegenerateError : Error { using Error::Error; };
struct DomainError : Error { using Error::Error; };
struct ZeroTraceError : Error { using Error::Error; };
struct GridTooSmallError : Error { using Error::Error; };
struct BehindCameraError : Error { using Error::Error; };
struct NoVisibilityError : Error { using Error::Error; };
struct RankDeficientError : Error { using Error::Error; };
struct SingularCovarianceError : Error { using Error::Error; };
struct ShapeMismatchError : Error { using Error::Error; };
struct EmptySceneError : Error { using Error::Error; };

// File-format errors carry enough context to name the offending location.
struct IoError : Error { using Error::Error; };
struct MalformedHeaderError : IoError { using IoError::IoError; };
struct TruncatedPayloadError : IoError { using IoError::IoError; };
struct UnsupportedEncodingError : IoError { using IoError::IoError; };

} // namespace sgs
