"""
Fichier d'initialisation pour le package de tests
"""
