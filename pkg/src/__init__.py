"""Adini要素による重調和方程式ソルバー"""
