#pragma once

#include <stdexcept>
#include <string>

namespace evolve {

enum class Errc {
    usage,
    config,
    timeout,
    transport,
    link_down,
    authentication,
    protocol,
    access_denied,
    payload,
    selection,
    ordering,
    integrity,
    fetch,
    apply,
    rollback,
    sequencing,
    state,
    validation,
    unavailable,
    dispute,
};

class Error : public std::runtime_error {
public:
    Error(Errc code, const std::string& what) : std::runtime_error(what), code_(code) {}
    Errc code() const { return code_; }

private:
    Errc code_;
};

#define EVOLVE_DEFINE_ERROR(Name, Code)                                   \
    class Name : public Error {                                           \
    public:                                                               \
        explicit Name(const std::string& what) : Error(Errc::Code, what) {} \
    }

EVOLVE_DEFINE_ERROR(UsageError, usage);
EVOLVE_DEFINE_ERROR(ConfigError, config);
EVOLVE_DEFINE_ERROR(TimeoutError, timeout);
EVOLVE_DEFINE_ERROR(TransportError, transport);
EVOLVE_DEFINE_ERROR(LinkDownError, link_down);
EVOLVE_DEFINE_ERROR(AuthenticationError, authentication);
EVOLVE_DEFINE_ERROR(ProtocolError, protocol);
EVOLVE_DEFINE_ERROR(AccessDeniedError, access_denied);
EVOLVE_DEFINE_ERROR(PayloadError, payload);
EVOLVE_DEFINE_ERROR(SelectionError, selection);
EVOLVE_DEFINE_ERROR(OrderingError, ordering);
EVOLVE_DEFINE_ERROR(IntegrityError, integrity);
EVOLVE_DEFINE_ERROR(FetchError, fetch);
EVOLVE_DEFINE_ERROR(ApplyError, apply);
EVOLVE_DEFINE_ERROR(RollbackError, rollback);
EVOLVE_DEFINE_ERROR(SequencingError, sequencing);
EVOLVE_DEFINE_ERROR(StateError, state);
EVOLVE_DEFINE_ERROR(ValidationError, validation);
EVOLVE_DEFINE_ERROR(UnavailableError, unavailable);

#undef EVOLVE_DEFINE_ERROR

}  // namespace evolve
