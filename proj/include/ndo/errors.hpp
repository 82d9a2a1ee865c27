#pragma once

#include <stdexcept>
#include <string>

namespace ndo {

// Base class for all library errors.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Tensor / tape errors
struct ShapeMismatch : Error { using Error::Error; };
struct NotScalar : Error { using Error::Error; };
struct TapeConsumed : Error { using Error::Error; };

// Solver errors
struct NoSolidCells : Error { using Error::Error; };
struct EmptySource : Error { using Error::Error; };
struct ChannelBlocked : Error { using Error::Error; };
struct NumericBlowup : Error { using Error::Error; };

// Geometry errors
struct DegenerateDesign : Error { using Error::Error; };
struct DomainError : Error { using Error::Error; };
struct OutOfBounds : Error { using Error::Error; };

// Fitness errors
struct GeometryTouchesBoundary : Error { using Error::Error; };
struct EmptyMask : Error { using Error::Error; };

// IO / pipeline errors
struct IoError : Error { using Error::Error; };
struct FormatError : Error { using Error::Error; };
struct EmptyDataset : Error { using Error::Error; };
struct EmptyTestSet : Error { using Error::Error; };
struct NonFiniteLoss : Error { using Error::Error; };
struct TooManyFailures : Error { using Error::Error; };

// Optimizer errors
struct CheckpointMissing : Error { using Error::Error; };
struct NonFiniteFitness : Error { using Error::Error; };

}  // namespace ndo
