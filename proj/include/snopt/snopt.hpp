/*
 Copyright 2026 The snopt-kit Authors

 Licensed under the Apache License, Version 2.0 (the "License");
 you may not use this file except in compliance with the License.
 You may obtain a copy of the License at

      https://www.apache.org/licenses/LICENSE-2.0

 Unless required by applicable law or agreed to in writing, software
 distributed under the License is distributed on an "AS IS" BASIS,
 WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 See the License for the specific language governing permissions and
 limitations under the License.
*/

#pragma once

#include "snopt/errors.hpp"
#include "snopt/rng.hpp"
#include "snopt/numerics.hpp"
#include "snopt/odesolve.hpp"
#include "snopt/vector_field.hpp"
#include "snopt/loss.hpp"
#include "snopt/adjoint.hpp"
#include "snopt/curvature.hpp"
#include "snopt/kfac.hpp"
#include "snopt/optimizer.hpp"
#include "snopt/horizon.hpp"
#include "snopt/data.hpp"
#include "snopt/oracle.hpp"
#include "snopt/trainer.hpp"
#include "snopt/config.hpp"
#include "snopt/verify.hpp"
