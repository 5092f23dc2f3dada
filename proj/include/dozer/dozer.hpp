#pragma once

#include "dozer/errors.hpp"
#include "dozer/digest.hpp"
#include "dozer/strace_parser.hpp"
#include "dozer/canonicalizer.hpp"
#include "dozer/shell_frontend.hpp"
#include "dozer/knowledge_base.hpp"
#include "dozer/comparator.hpp"
#include "dozer/synthesizer.hpp"
#include "dozer/validator.hpp"
#include "dozer/container_backend.hpp"
#include "dozer/config.hpp"
#include "dozer/cli.hpp"
