# ignet packages
