#pragma once

#include <Eigen/Dense>

#include <stdexcept>
#include <string>

namespace colrel {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Base class for all errors raised by the library.
class Error : public std::runtime_error
{
public:
    using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error
{
public:
    using Error::Error;
};

} // namespace colrel
