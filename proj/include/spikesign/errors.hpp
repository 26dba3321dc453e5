#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace spikesign {

/// Malformed event or weight file. Carries the byte offset where parsing failed.
class FormatError : public std::runtime_error {
public:
    FormatError(const std::string& what, std::uint64_t offset)
        : std::runtime_error(what + " (byte offset " + std::to_string(offset) + ")"), offset_(offset)
    {
    }

    std::uint64_t offset() const noexcept { return offset_; }

private:
    std::uint64_t offset_;
};

/// Shape or size mismatch between collaborating objects.
class ContractError : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

/// Invalid construction parameters (kernel geometry, ROI side, config values).
class ParameterError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

} // namespace spikesign
