"""Safe navigation with time-varying density functions: fields, controllers, simulator, certificates."""
