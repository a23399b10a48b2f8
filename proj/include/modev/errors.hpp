#pragma once

#include <stdexcept>
#include <string>

namespace modev {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define MODEV_DEFINE_ERROR(Name)                 \
    class Name : public Error {                  \
    public:                                      \
        using Error::Error;                      \
    }

MODEV_DEFINE_ERROR(DomainError);      // parameter outside the open parameter box
MODEV_DEFINE_ERROR(SupportError);     // observation outside the family's support
MODEV_DEFINE_ERROR(QuadratureError);
MODEV_DEFINE_ERROR(DivergenceError);  // integrand not integrable
MODEV_DEFINE_ERROR(RankError);        // Fisher matrix not of full rank
MODEV_DEFINE_ERROR(GridError);
MODEV_DEFINE_ERROR(MonotoneError);
MODEV_DEFINE_ERROR(UnderflowError);
MODEV_DEFINE_ERROR(DimensionError);
MODEV_DEFINE_ERROR(TiltDomainError);
MODEV_DEFINE_ERROR(BudgetError);
MODEV_DEFINE_ERROR(ConfigError);
MODEV_DEFINE_ERROR(EmptyDirError);
MODEV_DEFINE_ERROR(PreconditionError);  // argument violates an operation precondition

#undef MODEV_DEFINE_ERROR

}  // namespace modev
