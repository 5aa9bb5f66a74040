#pragma once

#include <stdexcept>
#include <string>

namespace pif {

// Base for every error the core throws. The C API maps the category onto
// a status code.
class Error : public std::runtime_error {
public:
    enum class Category { InvalidArgument, Validation, Io, Corrupt, Timeout, State, Network, Runtime };

    Error(Category category, const std::string &message)
        : std::runtime_error(message), category_(category) {}

    Category category() const noexcept { return category_; }

private:
    Category category_;
};

inline Error invalid_argument(const std::string &msg) { return Error(Error::Category::InvalidArgument, msg); }
inline Error validation_error(const std::string &msg) { return Error(Error::Category::Validation, msg); }
inline Error io_error(const std::string &msg) { return Error(Error::Category::Io, msg); }
inline Error state_error(const std::string &msg) { return Error(Error::Category::State, msg); }
inline Error timeout_error(const std::string &msg) { return Error(Error::Category::Timeout, msg); }
inline Error network_error(const std::string &msg) { return Error(Error::Category::Network, msg); }

} // namespace pif
