from .model import (VARIANTS, StorageConfig, StorageDecision, StorageState, contribution, demand_forecast,
                    feasible, initial_state, make_storage_model, price_forecast, project_feasible,
                    signal_decision, transition, wind_forecast, write_trajectory)
