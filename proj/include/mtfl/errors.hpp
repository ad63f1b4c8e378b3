#pragma once
#include <stdexcept>
#include <string>

namespace mtfl {

// Precondition on an operation's input was violated (bad shape, bad value).
using invalid_argument = std::invalid_argument;

class capacity_exceeded : public std::length_error {
public:
    using std::length_error::length_error;
};

// A documented structural contract between objects was broken, e.g. an
// uncoupled embedding pair or non-symmetric parameters on a symmetric path.
class contract_violation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

class config_error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace mtfl
