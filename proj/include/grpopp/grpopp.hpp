#pragma once

#include "grpopp/advantage.hpp"
#include "grpopp/config.hpp"
#include "grpopp/env.hpp"
#include "grpopp/eval.hpp"
#include "grpopp/labels.hpp"
#include "grpopp/objective.hpp"
#include "grpopp/policy.hpp"
#include "grpopp/report_io.hpp"
#include "grpopp/rewards.hpp"
#include "grpopp/trainer.hpp"
#include "grpopp/verify.hpp"
