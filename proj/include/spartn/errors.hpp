#pragma once

#include <stdexcept>
#include <string>

namespace spartn {

// Base for all library errors; the subclass names the failure kind.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

#define SPARTN_DEFINE_ERROR(Name) \
  class Name : public Error {     \
   public:                        \
    using Error::Error;           \
  }

SPARTN_DEFINE_ERROR(InvalidArgument);
SPARTN_DEFINE_ERROR(DegenerateMotion);
SPARTN_DEFINE_ERROR(InvalidScale);
SPARTN_DEFINE_ERROR(IndexOutOfRange);
SPARTN_DEFINE_ERROR(InsufficientViews);
SPARTN_DEFINE_ERROR(IntrinsicsMismatch);
SPARTN_DEFINE_ERROR(DimensionMismatch);
SPARTN_DEFINE_ERROR(PlacementFailure);
SPARTN_DEFINE_ERROR(EpisodeFailed);
SPARTN_DEFINE_ERROR(ResolutionMismatch);
SPARTN_DEFINE_ERROR(EmptyDataset);
SPARTN_DEFINE_ERROR(WindowOutOfRange);
SPARTN_DEFINE_ERROR(FormatError);

#undef SPARTN_DEFINE_ERROR

}  // namespace spartn
