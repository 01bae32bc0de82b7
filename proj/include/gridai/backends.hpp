#pragma once

#include <memory>
#include <variant>

#include "gridai/backend.hpp"
#include "gridai/backend_heuristic.hpp"
#include "gridai/backend_remote.hpp"
#include "gridai/backend_replay.hpp"

namespace gridai {

using BackendHandle = std::shared_ptr<Backend>;
using MakeBackendResult = std::variant<BackendHandle, BackendError>;

// Replay consumes the transcript; the other kinds record into it when a path
// is configured, which is how a live run is captured for later replay.
inline MakeBackendResult make_backend(const BackendConfig& config) {
  switch (config.kind) {
    case BackendKind::replay: {
      if (config.transcript_path.empty())
        return BackendError{BackendErrorKind::backend_unavailable,
                            "replay backend requires a transcript path"};
      return BackendHandle(std::make_shared<ReplayBackend>(config.transcript_path));
    }
    case BackendKind::remote: {
      if (config.endpoint.empty() || config.model.empty())
        return BackendError{BackendErrorKind::backend_unavailable,
                            "remote backend requires an endpoint and a model"};
      BackendHandle backend = std::make_shared<RemoteBackend>(config);
      if (!config.transcript_path.empty())
        backend = std::make_shared<RecordingBackend>(backend, config.transcript_path);
      return backend;
    }
    case BackendKind::heuristic: {
      BackendHandle backend = std::make_shared<HeuristicBackend>();
      if (!config.transcript_path.empty())
        backend = std::make_shared<RecordingBackend>(backend, config.transcript_path);
      return backend;
    }
  }
  return BackendError{BackendErrorKind::backend_unavailable, "unknown backend kind"};
}

}  // namespace gridai
