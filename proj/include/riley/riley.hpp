#pragma once

// Core pipeline. The HTTP pieces live in riley/ollama.hpp and
// riley/http_service.hpp so that users who only need the engine do not pull
// in cpp-httplib.
#include "riley/ballot.hpp"
#include "riley/config.hpp"
#include "riley/debate.hpp"
#include "riley/emotion.hpp"
#include "riley/error.hpp"
#include "riley/events.hpp"
#include "riley/gateway.hpp"
#include "riley/mock_backend.hpp"
#include "riley/rag.hpp"
#include "riley/session.hpp"
#include "riley/synthesis.hpp"
#include "riley/text.hpp"
